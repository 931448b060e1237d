import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // the integration suite boots a real server process
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
