"""Numerical services: kernel expansion, solvers, analysis and experiments"""
