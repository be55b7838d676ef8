"""
CLI境界での単位変換（内部単位: 時間 ps、長さ nm、レート 1/ps）
"""
import logging
from typing import Any, Dict, List, Optional, Tuple

import pint

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

ureg = pint.UnitRegistry()
Q_ = ureg.Quantity

INTERNAL_UNITS = {
    "time": "ps",
    "length": "nm",
    "rate": "1/ps",
}

# DiffusionConfig のフィールドごとの物理量
DIFFUSION_FIELD_KINDS = {
    "gamma": "rate",
    "tau": "time",
    "lifetime_T": "time",
    "complex_diameter": "length",
}


def to_internal(value: Any, kind: str, field: str = "") -> Tuple[float, Optional[Dict[str, Any]]]:
    """
    数値または "1.5 ns" のような文字列を内部単位の float にする

    Returns:
        (内部単位の値, 変換記録。素の数値なら None)
    """
    if kind not in INTERNAL_UNITS:
        raise ConfigurationError(f"unknown quantity kind {kind!r}")
    if isinstance(value, bool):
        raise ConfigurationError(f"{field or kind}: boolean is not a quantity")
    if isinstance(value, (int, float)):
        return float(value), None
    try:
        quantity = Q_(str(value))
        converted = quantity.to(INTERNAL_UNITS[kind])
    except (pint.errors.UndefinedUnitError, pint.errors.DimensionalityError) as e:
        raise ConfigurationError(f"{field or kind}: cannot convert {value!r} to {INTERNAL_UNITS[kind]}: {e}") from e
    except Exception as e:
        raise ConfigurationError(f"{field or kind}: cannot parse quantity {value!r}") from e
    magnitude = float(converted.magnitude)
    record = {"field": field, "input": str(value), "value": magnitude, "unit": INTERNAL_UNITS[kind]}
    logger.debug("unit conversion %s: %s -> %g %s", field, value, magnitude, INTERNAL_UNITS[kind])
    return magnitude, record


def convert_diffusion_fields(raw: Dict[str, Any]) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """拡散設定の単位付き値を内部単位へ。変換記録はマニフェスト用"""
    converted = dict(raw)
    records = []
    for field, kind in DIFFUSION_FIELD_KINDS.items():
        if field in raw:
            converted[field], record = to_internal(raw[field], kind, field)
            if record:
                records.append(record)
    return converted, records
