"""ResidueBench: adversarial attack and residue detection workbench"""

__version__ = "1.0.0"
