"""
Quadratic Kernel AMP
Nonlinear function estimation by quadratic feature expansion and approximate message passing
"""

__version__ = "1.0.0"
