"""Numerical verification engine for V-static and Einstein volume comparison."""
