import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the end-to-end test boots the real model server, which is slow on CPU
    testTimeout: 300_000,
    hookTimeout: 300_000,
  },
});
