"""
semiclab: A laboratory for matrix-valued semiclassical quantum dynamics.
"""

__version__: str = "0.1.0"
__author__: str = "pyyupsk"
__description__: str = "Weyl calculus, semiclassical projections, transport and ergodicity checks"
