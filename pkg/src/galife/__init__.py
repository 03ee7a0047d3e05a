"""Lifespan prediction for ground-to-air mmWave multipath components."""
