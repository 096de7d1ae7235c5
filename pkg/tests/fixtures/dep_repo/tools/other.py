"""Co-occurring file whose call resolves to a different normalize_total."""
from tools.local_norm import normalize_total


def misleading(order):
    return normalize_total(order)
