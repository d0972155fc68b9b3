import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // The integration test boots the Python API (seeding + training two
    // models) before it can make a single request, so budgets are generous.
    testTimeout: 120_000,
    hookTimeout: 180_000,
  },
});
