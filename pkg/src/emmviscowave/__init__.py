"""Finite-element laboratory for the anisotropic extended Maxwell model of viscoelasticity."""
from .material import EmmMaterial, MaterialField, MaxwellBranch, isotropic
from .mesh import Mesh2D, load_mesh, rect_mesh, save_mesh
from .assembly import assemble_ad, assemble_reduced

__version__ = "0.1.0"
