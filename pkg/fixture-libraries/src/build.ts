/** Build every fixture twice — with symbols and stripped — and emit a
 * manifest mapping each fixture to the exports it is expected to have.
 *
 * Builds are warning-free by construction: the compiler runs with
 * -Wall -Wextra -Werror and any diagnostic output fails the build.
 */

import { spawnSync } from "node:child_process";
import { copyFileSync, mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { FIXTURES, type FixtureSpec } from "./specs.js";

export const MANIFEST_SCHEMA = "fixture-libraries-manifest";
export const MANIFEST_VERSION = 1;

const COMMON_FLAGS = ["-O0", "-fPIC", "-shared", "-Wall", "-Wextra", "-Werror"];

export interface FixtureArtifacts {
  symbols: string;
  stripped: string;
}

export interface ManifestEntry extends FixtureSpec {
  artifacts: FixtureArtifacts;
}

export interface Manifest {
  schema: typeof MANIFEST_SCHEMA;
  version: typeof MANIFEST_VERSION;
  fixtures: ManifestEntry[];
}

export class ToolchainMissingError extends Error {
  readonly code = "TOOLCHAIN_MISSING";
}

export class FixtureBuildError extends Error {
  readonly code = "FIXTURE_BUILD_FAILED";
}

export function findCompiler(
  candidates: string[] = ["gcc", "cc", "clang"],
): string {
  for (const candidate of candidates) {
    const probe = spawnSync(candidate, ["--version"], { encoding: "utf8" });
    if (!probe.error && probe.status === 0) {
      return candidate;
    }
  }
  throw new ToolchainMissingError(
    `no C compiler found (tried ${candidates.join(", ")})`,
  );
}

export function toolchainAvailable(): boolean {
  try {
    findCompiler();
    return true;
  } catch {
    return false;
  }
}

function run(command: string, args: string[], what: string): void {
  const proc = spawnSync(command, args, { encoding: "utf8" });
  if (proc.error) {
    throw new FixtureBuildError(`${what}: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    throw new FixtureBuildError(`${what} failed:\n${proc.stderr}`);
  }
  if (proc.stderr.trim() !== "") {
    throw new FixtureBuildError(`${what} emitted warnings:\n${proc.stderr}`);
  }
}

export function buildFixture(
  spec: FixtureSpec,
  fixtureDir: string,
  outDir: string,
  compiler: string,
): ManifestEntry {
  const symbols = join(outDir, `${spec.name}.so`);
  const stripped = join(outDir, `${spec.name}.stripped.so`);

  run(
    compiler,
    [
      ...COMMON_FLAGS,
      ...spec.buildFlags,
      `-Wl,-soname,${spec.name}.so`,
      join(fixtureDir, spec.source),
      "-o",
      symbols,
    ],
    `compile ${spec.name}`,
  );
  copyFileSync(symbols, stripped);
  run("strip", ["--strip-all", stripped], `strip ${spec.name}`);

  return { ...spec, artifacts: { symbols, stripped } };
}

export function buildFixtures(fixtureDir: string, outDir: string): Manifest {
  const compiler = findCompiler();
  mkdirSync(outDir, { recursive: true });
  const manifest: Manifest = {
    schema: MANIFEST_SCHEMA,
    version: MANIFEST_VERSION,
    fixtures: FIXTURES.map((spec) =>
      buildFixture(spec, fixtureDir, outDir, compiler),
    ),
  };
  writeFileSync(
    join(outDir, "manifest.json"),
    JSON.stringify(manifest, null, 2) + "\n",
    "utf8",
  );
  return manifest;
}
