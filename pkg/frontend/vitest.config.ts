import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    // the end-to-end test trains a real run in a subprocess
    hookTimeout: 120_000,
  },
});
