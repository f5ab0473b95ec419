#!/usr/bin/env python3
"""
Setup script for ResidueBench
"""

from setuptools import setup

from src import __version__

setup(
    name='ResidueBench',
    version=__version__,
    description='Adversarial residue detection workbench',
    packages=['src', 'src.attacks', 'src.detectors'],
    python_requires='>=3.9',
    install_requires=[
        'numpy>=1.24.0',
        'packaging>=21.0',
    ],
    extras_require={
        'test': [
            'pytest>=7.0',
            'scipy>=1.10',
        ],
    },
    entry_points={
        'console_scripts': [
            'residuebench=src.main:main',
        ],
    },
)
