"""Order domain records."""


class Order:
    def __init__(self, order_id, currency, total):
        self.order_id = order_id
        self.currency = currency
        self.total = total

    def describe(self):
        return f"{self.order_id} {self.total} {self.currency}"


class Invoice:
    def __init__(self, order):
        self.order = order
