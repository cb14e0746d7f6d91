"""Numeric core: tensors, masks, attention, encoder and presets"""
