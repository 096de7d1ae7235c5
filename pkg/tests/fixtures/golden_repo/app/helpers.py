"""Small numeric helpers."""


def clamp(value, low, high):
    return max(low, min(high, value))


def widen(value, factor):
    return value * factor
