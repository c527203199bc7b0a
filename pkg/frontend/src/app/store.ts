/**
 * Where a member session keeps its state between page loads. The browser
 * build uses localStorage (token and protocol state stay on the device);
 * tests use the in-memory store.
 */

export interface SessionStore {
  read(): string | null;
  write(text: string): void;
  clear(): void;
}

export function memoryStore(initial: string | null = null): SessionStore {
  let value = initial;
  return {
    read: () => value,
    write: (text) => {
      value = text;
    },
    clear: () => {
      value = null;
    },
  };
}

interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export function browserStore(key: string, storage?: StorageLike): SessionStore {
  const backing =
    storage ?? ((globalThis as { localStorage?: StorageLike }).localStorage as StorageLike);
  if (!backing) throw new Error("no localStorage available; pass a storage backend");
  return {
    read: () => backing.getItem(key),
    write: (text) => backing.setItem(key, text),
    clear: () => backing.removeItem(key),
  };
}

/** Keys of all sessions stored by the web client, newest last. */
export const SESSION_INDEX_KEY = "paysplit.sessions";

export function sessionKey(groupId: string, index: number): string {
  return `paysplit.session.${groupId}.${index}`;
}
