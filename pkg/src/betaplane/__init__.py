"""Closed-form constant-vorticity flows in a stratified beta-plane ocean, with
finite-difference verification and layered hydrostatic pressure tools."""

from betaplane.model import (
    FlowField,
    LayerSpec,
    PhysicalConstants,
    PressureAffine,
    PressureField,
    StratifiedColumn,
    SurfaceField,
    Vorticity,
    make_closed_form_flow,
    make_column,
    make_constants,
    tilde_transform,
    vertical_coefficient,
)

__version__ = "0.1.0"
