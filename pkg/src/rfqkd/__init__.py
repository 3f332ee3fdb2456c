"""RF side-channel attack simulator for SPD-based QKD receivers."""
