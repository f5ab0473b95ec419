"""Adversarial example detectors"""
