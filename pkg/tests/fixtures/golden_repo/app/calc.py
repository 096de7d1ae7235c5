"""Running statistics over bounded windows."""
import math
from app.helpers import clamp


def rolling_mean(values, window):
    total = 0.0
    for value in values[-window:]:
        total += value
    return clamp(total / window, 0.0, 100.0)


def spread(values):
    return math.sqrt(max(values) - min(values))
