"""Analytic continuation of limited, noisy Matsubara data."""
