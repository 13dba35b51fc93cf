"""Risk-calibrated interactive planning."""
