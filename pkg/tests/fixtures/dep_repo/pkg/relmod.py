"""Relative-import exercise for the resolver."""
from .util import scale_factor as sf


def rel_caller(currency):
    return sf(currency) + 1
