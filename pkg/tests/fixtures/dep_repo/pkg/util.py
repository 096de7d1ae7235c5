"""Currency scaling utilities."""

MAX_PAYLOAD = 4096


def scale_factor(currency):
    return {"USD": 1, "EUR": 100, "JPY": 1}.get(currency, 1)


def unused_helper(value):
    return value * 2
