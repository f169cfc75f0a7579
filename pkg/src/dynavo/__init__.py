"""Stereo visual odometry and mapping with dynamic-object rejection."""
