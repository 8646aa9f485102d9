"""Curvature of spherically symmetric Finsler metrics F = u phi(r, s).

Subpackages are plain modules: ``jet`` (Taylor jets), ``quadrature``,
``metrics`` (metric and spray definitions), ``curvature`` (closed forms),
``oracle`` (finite differences), ``grid``, ``battery`` and ``cli``.
"""
from .curvature import (CurvaturePack, ConditionReport, FrameData, PointFrame, SprayData, berwald,
                        curvature_pack, frame, inverse_metric, landsberg, mean_berwald, mean_landsberg,
                        metric_tensor, residuals, ricci, spray, uw)
from .errors import (BaseMismatch, DivisionNearZero, EmptyGridAfterGuards, FinslerError,
                     IntegrandSingularOnPath, MaxDepthExceeded, OrderOutOfRange, ParseError,
                     SingularFrame, SqrtNonPositive, StencilCrossesSingularSet, ValidationError,
                     ZeroVector)
from .jet import Jet, JetCaps, elementary, extract, seed_point
from .metrics import (BryantParams, FamilyParams, MetricSpec, PhiForm, Poly, SprayForm, a_of_r, bryant,
                      euclidean, family, phi_jet, riemann_quadratic)
from .quadrature import QuadSpec, quad

__version__ = "0.1.0"
