"""Test suite for sparse-data-diffusion."""
