#!/usr/bin/env python3
"""
ResidueBench Launcher
"""
import os
import sys

# Add the project root to the Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.experiments import get_registry
from src.main import main


def print_overview():
    print("ResidueBench - adversarial residue detection workbench")
    print("Usage: run_workbench.py --seed N [--out DIR] <command> ...")
    print("Commands: synth, train-model, attack, detect, analyze, eval, experiment")
    print(f"Experiments: {', '.join(get_registry().ids())}")
    print("Run with --help for every option")


if __name__ == "__main__":
    if len(sys.argv) == 1:
        print_overview()
        sys.exit(0)
    sys.exit(main())
