"""Lifespan predictors."""
