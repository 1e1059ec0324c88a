import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the e2e spec drives a real server and a 1000-question session
    testTimeout: 30_000,
    hookTimeout: 60_000,
    fileParallelism: false,
  },
});
