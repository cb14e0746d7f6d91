"""Sensitivity and attention-bias analyses"""
