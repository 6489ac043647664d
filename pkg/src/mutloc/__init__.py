"""Mutual localization: relative camera pose from reciprocal marker sightings."""
