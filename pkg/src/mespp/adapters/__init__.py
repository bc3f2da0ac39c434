"""Solver adapters speaking the toolkit's solution-file dialect."""
