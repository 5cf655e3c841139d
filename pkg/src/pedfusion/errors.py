"""Exception types raised across the pipeline."""


class PedFusionError(Exception):
    """Base class for all errors raised by this package."""


# calibration
class TooFewSamples(PedFusionError):
    pass


class DegenerateDesign(PedFusionError):
    pass


class OutOfCalibratedRange(PedFusionError):
    def __init__(self, y_px: float, y_range: tuple[float, float]):
        self.y_px = y_px
        self.y_range = y_range
        super().__init__(f"y={y_px!r} px outside calibrated range [{y_range[0]}, {y_range[1]}]")


class NonMonotone(PedFusionError):
    pass


class TooFewAnchors(PedFusionError):
    pass


class NoScanAvailable(PedFusionError):
    pass


# vision
class DegeneratePolygon(PedFusionError):
    pass


class DimensionMismatch(PedFusionError):
    pass


# simulation
class InfeasibleGeometry(PedFusionError):
    pass


class BehindCamera(PedFusionError):
    pass


# io
class SchemaError(PedFusionError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(prefix + message)


class MissingCalibration(PedFusionError):
    pass
