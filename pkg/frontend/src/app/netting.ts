/**
 * Who-pays-whom view of settled balances.
 *
 * Balances use the ledger's sign convention: positive means the member owes
 * the group, negative means the group owes the member. Netting repeatedly
 * matches the largest debtor with the largest creditor (lowest index wins
 * ties), so the number of transfers stays below the group size.
 */

export interface Transfer {
  from: number;
  to: number;
  cents: number;
}

export function netTransfers(balances: Map<number, number>): Transfer[] {
  const debtors: Array<{ index: number; left: number }> = [];
  const creditors: Array<{ index: number; left: number }> = [];
  let sum = 0;
  for (const [index, cents] of balances) {
    sum += cents;
    if (cents > 0) debtors.push({ index, left: cents });
    else if (cents < 0) creditors.push({ index, left: -cents });
  }
  if (sum !== 0) throw new Error("balances do not sum to zero");

  const byLoad = (a: { index: number; left: number }, b: { index: number; left: number }) =>
    b.left - a.left || a.index - b.index;
  const out: Transfer[] = [];
  while (debtors.length && creditors.length) {
    debtors.sort(byLoad);
    creditors.sort(byLoad);
    const d = debtors[0];
    const c = creditors[0];
    const moved = Math.min(d.left, c.left);
    out.push({ from: d.index, to: c.index, cents: moved });
    d.left -= moved;
    c.left -= moved;
    if (d.left === 0) debtors.shift();
    if (c.left === 0) creditors.shift();
  }
  return out;
}
