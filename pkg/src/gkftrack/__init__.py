"""3D multi-object tracking with a learned recurrent Kalman gain."""
__version__ = "0.1.0"
