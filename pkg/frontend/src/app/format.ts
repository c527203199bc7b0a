/** Cent-amount formatting and parsing for the views. */

export function formatCents(cents: number): string {
  const sign = cents < 0 ? "-" : "";
  const abs = Math.abs(cents);
  const dollars = Math.floor(abs / 100);
  const rem = String(abs % 100).padStart(2, "0");
  return `${sign}$${dollars}.${rem}`;
}

/** "$80.56", "80.56", "80" -> cents; throws on malformed input. */
export function parseAmount(text: string): number {
  const cleaned = text.trim().replace(/^\$/, "");
  const match = /^(\d+)(?:\.(\d{1,2}))?$/.exec(cleaned);
  if (!match) throw new Error(`not a dollar amount: ${JSON.stringify(text)}`);
  const dollars = Number(match[1]);
  const centsPart = (match[2] ?? "").padEnd(2, "0");
  const cents = dollars * 100 + Number(centsPart || "0");
  if (!Number.isSafeInteger(cents)) throw new Error("amount too large");
  return cents;
}
