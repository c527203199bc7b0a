/**
 * AES-128 single-block reference vectors.
 *
 * The first two sets are the published example blocks from FIPS-197
 * (appendix B) and NIST SP 800-38A (ECB-AES128.Encrypt). The layout set
 * pins the mask PRF input layout end to end: each plaintext is
 * tag|round|i|j|pad as built by encodeInput, each ciphertext was computed
 * with an independent AES implementation (PyCA cryptography) under the key
 * below, so a TS-side layout or cipher slip cannot cancel itself out.
 */

export const FIPS_197 = {
  key: "000102030405060708090a0b0c0d0e0f",
  plaintext: "00112233445566778899aabbccddeeff",
  ciphertext: "69c4e0d86a7b0430d8cdb78070b4c55a",
};

export const SP800_38A = {
  key: "2b7e151628aed2a6abf7158809cf4f3c",
  blocks: [
    ["6bc1bee22e409f96e93d7e117393172a", "3ad77bb40d7a3660a89ecaf32466ef97"],
    ["ae2d8a571e03ac9c9eb76fac45af8e51", "f5d3d58503b9699de785895a96fdbaaf"],
    ["30c81c46a35ce411e5fbc1191a0a52ef", "43b1cd7f598ece23881b00e3ed030688"],
    ["f69f2445df4f9b17ad2b417be66c3710", "7b0c785e27e8ad3f8223207104725dd4"],
  ] as const,
};

export const LAYOUT_KEY = "0f1e2d3c4b5a69788796a5b4c3d2e1f0";

/** [domain, round, i, j, expected input hex, expected AES output hex] */
export const LAYOUT_BLOCKS: Array<[number, number, number, number, string, string]> = [
  [0, 0, 0, 0, "00000000000000000000000000000000", "c2a8bfee68bee1407cd2dde7e86df983"],
  [1, 0, 0, 0, "01000000000000000000000000000000", "731ea555a30991ffbaffcd35e7e8d9f9"],
  [2, 0, 1, 1, "02000000000000000000000100000100", "f3773ffea4a1eb6eabb4ec9de0d9b95f"],
  [2, 0, 1, 2, "02000000000000000000000100000200", "536f8002a4e835ac5f2230482765af06"],
  [2, 5, 3, 1, "02000000000000000500000300000100", "e0edb25de3169ec820e60754b0eaf58f"],
  [2, 41, 2, 4, "02000000000000002900000200000400", "409a1bc4d1c8bd2da8ee1b7d8112b83f"],
  [2, 1099511627899, 7, 9, "02000001000000007b00000700000900", "cb50cccb51efc5ff518b6f574464aeba"],
  [3, 12, 4, 0, "03000000000000000c00000400000000", "4013ba97f02ce5811462fcb682004a0a"],
  [4, 6, 2, 0, "04000000000000000600000200000000", "aaa1579799a926a195a5cf059ad134e5"],
  [2, 0, 16777215, 16777215, "020000000000000000ffffffffffff00", "caec45f3bea15810b2f157f025513ef7"],
];
