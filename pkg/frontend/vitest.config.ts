import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    // the integration suite boots the gateway server in a subprocess
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
