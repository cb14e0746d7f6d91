"""Differentiation, optimisation, tasks and the training loop"""
