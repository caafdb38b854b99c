import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    globalSetup: "./test/global-setup.ts",
    testTimeout: 120_000,
    hookTimeout: 300_000,
    pool: "forks",
  },
});
