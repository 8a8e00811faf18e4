"""Outgoing radiance from transfer and light coefficients.

Diffuse is albedo/pi times the transfer-light coefficient dot product
per channel. Specular evaluates both coefficient sets as band-limited
functions at the mirror reflection of the view direction and multiplies
them, scaled by the material tint. Both terms are linear in the light.
"""

from dataclasses import dataclass

import numpy as np

from . import sh


@dataclass(frozen=True)
class RadianceSample:
    diffuse: np.ndarray
    specular: np.ndarray
    combined: np.ndarray


def reflect_direction(view, normal):
    """Mirror reflection 2 (v . n) n - v of the view direction."""
    view = np.asarray(view, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    d = np.sum(view * normal, axis=-1, keepdims=True)
    return 2.0 * d * normal - view


def diffuse_radiance(albedo, transfer, light):
    """Diffuse outgoing radiance, independent of view direction.

    Args:
        albedo: (3,) diffuse albedo.
        transfer: (n,) transfer coefficients.
        light: ShLight with matching degree.

    Returns:
        (3,) linear radiance.
    """
    transfer = np.asarray(transfer, dtype=np.float64)
    if transfer.shape[0] != light.coeffs.shape[0]:
        raise ValueError(
            f"transfer has {transfer.shape[0]} coefficients, light has {light.coeffs.shape[0]}")
    irradiance = transfer @ light.coeffs
    return np.asarray(albedo, dtype=np.float64) / np.pi * irradiance


def specular_radiance(tint, normal, view, transfer, light):
    """Single-reflection specular radiance toward the view direction."""
    transfer = np.asarray(transfer, dtype=np.float64)
    if transfer.shape[0] != light.coeffs.shape[0]:
        raise ValueError(
            f"transfer has {transfer.shape[0]} coefficients, light has {light.coeffs.shape[0]}")
    r = reflect_direction(view, normal)
    basis = sh.eval_basis(r, sh.degree_for(transfer.shape[0]))
    light_at_r = basis @ light.coeffs
    transfer_at_r = basis @ transfer
    return np.asarray(tint, dtype=np.float64) * light_at_r * transfer_at_r


def outgoing_radiance(albedo, tint, normal, view, transfer, light):
    """Full reflection model: diffuse plus specular."""
    d = diffuse_radiance(albedo, transfer, light)
    s = specular_radiance(tint, normal, view, transfer, light)
    return RadianceSample(diffuse=d, specular=s, combined=d + s)
