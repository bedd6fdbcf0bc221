from .base import SdeModel, em_step, rk4_step, whiten
from .biped import J5, BipedModel, BipedParams, biped_accel
from .cartpole import CartPoleModel, cartpole_accel
from .lintoy import DoubleIntegratorModel

__all__ = [
    "SdeModel",
    "em_step",
    "rk4_step",
    "whiten",
    "CartPoleModel",
    "cartpole_accel",
    "BipedModel",
    "BipedParams",
    "biped_accel",
    "J5",
    "DoubleIntegratorModel",
]
