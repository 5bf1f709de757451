"""HTTP routes over the numerical services"""
