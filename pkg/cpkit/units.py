"""
Unit Converter Module
Conversion table for the speed units found on road signs and in ride logs
"""
from typing import Dict, Optional

from .errors import InvalidArgumentError


class UnitConverter:
    """
    Converts between units of the same kind through a base unit
    """

    def __init__(self):
        """Initialize unit conversion tables"""
        self.conversion_factors = self._load_conversion_factors()

    def _load_conversion_factors(self) -> Dict[str, Dict[str, float]]:
        """Load conversion factors for the supported unit types"""
        return {
            'speed': {
                # Base unit: meter per second
                'm/s': 1.0,
                'mps': 1.0,
                'km/h': 1000.0 / 3600.0,
                'kmh': 1000.0 / 3600.0,
                'kph': 1000.0 / 3600.0,
                'mph': 1609.344 / 3600.0,
                'kn': 1852.0 / 3600.0,
                'knot': 1852.0 / 3600.0,
                'knots': 1852.0 / 3600.0,
            },
        }

    def convert(self, value: float, from_unit: str, to_unit: str) -> float:
        """
        Convert ``value`` from ``from_unit`` to ``to_unit``

        Raises:
            InvalidArgumentError: unknown units or units of different kinds
        """
        from_unit = from_unit.strip().lower()
        to_unit = to_unit.strip().lower()

        unit_type = self.detect_unit_type(from_unit)
        if unit_type is None:
            raise InvalidArgumentError(f"Unknown unit: {from_unit}")
        factors = self.conversion_factors[unit_type]
        if to_unit not in factors:
            raise InvalidArgumentError(f"Cannot convert {unit_type} unit '{from_unit}' to '{to_unit}'")
        if factors[from_unit] == factors[to_unit]:
            return float(value)

        # Convert to base unit, then to target unit
        return value * factors[from_unit] / factors[to_unit]

    def detect_unit_type(self, unit: str) -> Optional[str]:
        """Return the unit type a unit belongs to, or None"""
        for unit_type, factors in self.conversion_factors.items():
            if unit in factors:
                return unit_type
        return None


_converter = UnitConverter()


def convert(value: float, from_unit: str, to_unit: str) -> float:
    """Convert with the module-level converter"""
    return _converter.convert(value, from_unit, to_unit)


def kmh_to_mps(speed_kmh: float) -> float:
    return _converter.convert(speed_kmh, 'km/h', 'm/s')
