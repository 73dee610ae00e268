"""planfactory: procedural scenes, sampling-based planning and trajectory
dataset curation over a sphere-approximated manipulator."""

__version__ = "0.1.0"
