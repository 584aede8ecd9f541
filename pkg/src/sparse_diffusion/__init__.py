"""
sparse-data-diffusion

Joint diffusion of continuous values and sparsity bits for generating
sparse data with exact zeros.
"""

__version__ = "0.1.0"
