"""Adversarial attack generators"""
