"""A same-named function that is not the buggy one."""


def normalize_total(order):
    return order
