"""Bundled default configuration: a 7-DOF chain, its sphere model and a
small mesh pool for clutter sampling."""

import os

_HERE = os.path.dirname(__file__)


def default_chain_path() -> str:
    return os.path.join(_HERE, "default_chain.txt")


def default_sphere_model_path() -> str:
    return os.path.join(_HERE, "default_spheres.txt")


def default_mesh_pool_path() -> str:
    return os.path.join(_HERE, "meshpool")
