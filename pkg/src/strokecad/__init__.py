"""Stroke-to-CAD engine: boolean solid modeling, an editable operation
protocol, context-map rendering, sketch fitting, and synthetic data generation."""

from .camera import Camera, make_camera
from .csg import BooleanError, boolean
from .mesh import MeshError, PlanarFace, SolidModel
from .operators import (AddSubParams, BevelParams, ExtrudeParams, Operator,
                        OperatorError, SweepParams, apply, canonical_sketch)
from .primitives import unit_box
from .protocol import (Protocol, ProtocolError, edit_param, execute, parse_protocol,
                       serialize_protocol)

__all__ = [
    "Camera", "make_camera",
    "BooleanError", "boolean",
    "MeshError", "PlanarFace", "SolidModel",
    "AddSubParams", "BevelParams", "ExtrudeParams", "Operator", "OperatorError",
    "SweepParams", "apply", "canonical_sketch",
    "unit_box",
    "Protocol", "ProtocolError", "edit_param", "execute", "parse_protocol",
    "serialize_protocol",
]

__version__ = "0.1.0"
