"""Plaintext reference ledger.

Deliberately shares nothing with the protocol modules: plain dicts of ints,
applied transfer by transfer.  Every simulated run must end with the
protocol's settled balances equal to this ledger.
"""

from __future__ import annotations


class LedgerOracle:
    def __init__(self, members):
        self.balances = {int(i): 0 for i in members}

    def add_member(self, i: int) -> None:
        self.balances.setdefault(int(i), 0)

    def remove_member(self, i: int) -> None:
        bal = self.balances.pop(int(i))
        if bal != 0:
            raise AssertionError(f"member {i} left owing {bal}")

    def apply(self, charger: int, target: int, cents: int) -> None:
        if charger == target:
            raise AssertionError("self-charge")
        if cents <= 0:
            raise AssertionError("non-positive transfer")
        # positive balance means the member owes the group
        self.balances[target] += cents
        self.balances[charger] -= cents

    def check_zero_sum(self) -> None:
        total = sum(self.balances.values())
        if total != 0:
            raise AssertionError(f"ledger sum {total} != 0")

    def snapshot(self) -> dict[int, int]:
        return dict(self.balances)
