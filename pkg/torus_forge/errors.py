"""
torus_forge/errors.py — Jerarquía de errores del motor

Cada error lleva como atributos los valores que permiten diagnosticarlo.
El CLI traduce `exit_code` a código de salida del proceso.
"""
from __future__ import annotations


class TorusForgeError(Exception):
    """Base de todos los errores de dominio."""

    exit_code: int = 1


# ------------------------------------------------------------------
# Series y frecuencias
# ------------------------------------------------------------------

class DimensionMismatch(TorusForgeError):
    def __init__(self, left: int, right: int):
        super().__init__(f"dimensiones incompatibles: {left} vs {right}")
        self.left = left
        self.right = right


class ResonantMode(TorusForgeError):
    def __init__(self, k: tuple[int, ...], divisor: float):
        super().__init__(f"modo resonante k={k}: |<k,ω>| = {divisor:.3e}")
        self.k = k
        self.divisor = divisor


class SeriesNotConverged(TorusForgeError):
    exit_code = 3

    def __init__(self, terms: int, tail: float):
        super().__init__(f"la serie de Lie no se cortó en {terms} términos (cola ℓ¹ = {tail:.3e})")
        self.terms = terms
        self.tail = tail


class EmptyWindow(TorusForgeError):
    def __init__(self, kappa: float, total: int):
        super().__init__(f"ningún punto de la grilla ({total}) pasa con κ={kappa:g}")
        self.kappa = kappa
        self.total = total


# ------------------------------------------------------------------
# Modelo
# ------------------------------------------------------------------

class NoConvergence(TorusForgeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class RadiusTooLarge(TorusForgeError):
    def __init__(self, radius: float, omega: tuple[float, ...]):
        super().__init__(f"R={radius:g} saca la bola fuera de D⁰ en ω={omega}")
        self.radius = radius
        self.omega = omega


# ------------------------------------------------------------------
# Cálculo Gevrey
# ------------------------------------------------------------------

class ExponentMismatch(TorusForgeError):
    def __init__(self, inner: float, outer: float):
        super().__init__(f"exponente interno {inner} excede al externo {outer}")
        self.inner = inner
        self.outer = outer


class ContractionViolated(TorusForgeError):
    def __init__(self, what: str, value: float, limit: float):
        super().__init__(f"{what} = {value:.3e} excede {limit:.3e}")
        self.what = what
        self.value = value
        self.limit = limit


class MaxIterations(TorusForgeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"sin convergencia tras {iterations} iteraciones (residuo {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class SmallnessViolated(TorusForgeError):
    def __init__(self, value: float):
        super().__init__(f"εA·h = {value:.3e} > 1/2")
        self.value = value


# ------------------------------------------------------------------
# Aproximación
# ------------------------------------------------------------------

class OrderUnavailable(TorusForgeError):
    def __init__(self, requested: int, available: int):
        super().__init__(f"derivadas de orden {requested} pedidas, disponibles hasta {available}")
        self.requested = requested
        self.available = available


class QuadratureFailure(TorusForgeError):
    def __init__(self, message: str):
        super().__init__(message)


# ------------------------------------------------------------------
# KAM
# ------------------------------------------------------------------

class MinSigma(TorusForgeError):
    exit_code = 2

    def __init__(self, sigma: float, failing: list[str]):
        super().__init__(f"σ={sigma:.3e} bajo el mínimo; fallan {failing}")
        self.sigma = sigma
        self.failing = failing


class NoRoot(TorusForgeError):
    def __init__(self, rhs: float, n: int):
        super().__init__(f"x − {n} ln x = {rhs:g} no tiene raíz en la rama x > {n}")
        self.rhs = rhs
        self.n = n


class ConditionViolated(TorusForgeError):
    exit_code = 2

    def __init__(self, which: str, value: float, limit: float):
        super().__init__(f"condición ({which}) violada: {value:.3e} > {limit:.3e}")
        self.which = which
        self.value = value
        self.limit = limit


class DivergenceDetected(TorusForgeError):
    exit_code = 3

    def __init__(self, level: int, history: list[float]):
        super().__init__(f"el residuo crece dos niveles seguidos (nivel {level})")
        self.level = level
        self.history = history


class ContourTooLarge(TorusForgeError):
    def __init__(self, radius: float, limit: float):
        super().__init__(f"radio de contorno {radius:.3e} > {limit:.3e}")
        self.radius = radius
        self.limit = limit


# ------------------------------------------------------------------
# Whitney y forma normal
# ------------------------------------------------------------------

class IncompatibleJet(TorusForgeError):
    def __init__(self, point: int, neighbor: int, ratio: float):
        super().__init__(
            f"jet incompatible entre puntos {point} y {neighbor}: resto/cota = {ratio:.3e}"
        )
        self.point = point
        self.neighbor = neighbor
        self.ratio = ratio


class NotLagrangian(TorusForgeError):
    def __init__(self, defect: float):
        super().__init__(f"defecto lagrangiano {defect:.3e}")
        self.defect = defect


class InversionFailure(TorusForgeError):
    def __init__(self, message: str):
        super().__init__(message)


class GeneratingDegenerate(TorusForgeError):
    def __init__(self, defect: float):
        super().__init__(f"|Id − Φ_I| = {defect:.3e} ≥ 1")
        self.defect = defect


class StepTooLarge(TorusForgeError):
    def __init__(self, step: float, limit: float):
        super().__init__(f"paso {step:.3e} > {limit:.3e}")
        self.step = step
        self.limit = limit


class NotSeparable(TorusForgeError):
    def __init__(self):
        super().__init__("el integrador necesita H = H⁰(I) + H¹(θ)")


# ------------------------------------------------------------------
# Configuración
# ------------------------------------------------------------------

class ConfigError(TorusForgeError):
    exit_code = 1

    def __init__(self, message: str, field: str = "", line: int | None = None):
        where = f" [{field}" + (f", línea {line}" if line else "") + "]" if field else ""
        super().__init__(f"{message}{where}")
        self.field = field
        self.line = line
