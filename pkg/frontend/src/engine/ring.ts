/** Arithmetic in Z_{2^128}; every protocol word lives here as a BigInt. */

export const BITS = 128n;
export const MOD = 1n << BITS;
export const MASK = MOD - 1n;
export const WORD_BYTES = 16;

const HALF = 1n << (BITS - 1n);

export function add(a: bigint, b: bigint): bigint {
  return (a + b) & MASK;
}

export function sub(a: bigint, b: bigint): bigint {
  return (a - b) & MASK;
}

export function mul(a: bigint, b: bigint): bigint {
  return (a * b) & MASK;
}

export function neg(a: bigint): bigint {
  return -a & MASK;
}

/** Centered representative: the unique x in [-2^127, 2^127) congruent to a. */
export function signed(a: bigint): bigint {
  a &= MASK;
  return a >= HALF ? a - MOD : a;
}

export function toBytes(a: bigint): Uint8Array {
  let v = a & MASK;
  const out = new Uint8Array(WORD_BYTES);
  for (let i = WORD_BYTES - 1; i >= 0; i--) {
    out[i] = Number(v & 0xffn);
    v >>= 8n;
  }
  return out;
}

export function fromBytes(raw: Uint8Array): bigint {
  if (raw.length !== WORD_BYTES) {
    throw new Error(`ring word must be ${WORD_BYTES} bytes, got ${raw.length}`);
  }
  let v = 0n;
  for (const b of raw) v = (v << 8n) | BigInt(b);
  return v;
}
