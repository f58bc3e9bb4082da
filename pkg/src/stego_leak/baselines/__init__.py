"""Non-learned steganography baselines."""
