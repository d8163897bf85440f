/** Command-line entry: build all fixtures and print a short summary. */

import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import { buildFixtures, ToolchainMissingError } from "./build.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixtureDir = process.argv[2] ?? join(here, "..", "fixtures");
const outDir = process.argv[3] ?? join(here, "..", "out");

try {
  const manifest = buildFixtures(fixtureDir, outDir);
  for (const entry of manifest.fixtures) {
    const fuzzable = entry.expectedExports.filter((e) => e.fuzzable).length;
    console.log(
      `${entry.name}: ${entry.expectedExports.length} exports ` +
        `(${fuzzable} fuzzable) -> ${entry.artifacts.symbols}`,
    );
  }
  console.log(`manifest: ${join(outDir, "manifest.json")}`);
} catch (error) {
  if (error instanceof ToolchainMissingError) {
    console.error(`skipped: ${error.message}`);
    process.exit(2);
  }
  throw error;
}
