import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    environment: "node",
    // live tests spawn the Python wire service and ride real round deadlines
    testTimeout: 120_000,
    hookTimeout: 60_000,
    pool: "forks",
  },
});
