"""Config package"""
