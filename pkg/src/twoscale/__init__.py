"""Two-scale Young measures on grids."""
