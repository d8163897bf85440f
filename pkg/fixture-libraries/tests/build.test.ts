import { mkdtempSync, readFileSync, statSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { beforeAll, describe, expect, it } from "vitest";

import {
  buildFixture,
  buildFixtures,
  findCompiler,
  FixtureBuildError,
  MANIFEST_SCHEMA,
  MANIFEST_VERSION,
  ToolchainMissingError,
  toolchainAvailable,
  type Manifest,
} from "../src/build.js";
import { dumpDefinedFunctions, oracleAvailable } from "../src/oracle.js";
import { FIXTURES } from "../src/specs.js";

const FIXTURE_DIR = join(
  fileURLToPath(new URL(".", import.meta.url)),
  "..",
  "fixtures",
);

const ready = toolchainAvailable() && oracleAvailable();

describe("compiler discovery", () => {
  it("raises a typed error when no compiler candidate exists", () => {
    expect(() => findCompiler(["definitely-not-a-compiler"])).toThrowError(
      ToolchainMissingError,
    );
    try {
      findCompiler(["definitely-not-a-compiler"]);
    } catch (error) {
      expect((error as ToolchainMissingError).code).toBe("TOOLCHAIN_MISSING");
    }
  });
});

describe.skipIf(!ready)("fixture builds", () => {
  let outDir: string;
  let manifest: Manifest;

  beforeAll(() => {
    outDir = mkdtempSync(join(tmpdir(), "fixture-libraries-"));
    manifest = buildFixtures(FIXTURE_DIR, outDir);
  });

  it("builds every fixture in both variants", () => {
    expect(manifest.fixtures.map((f) => f.name)).toEqual(
      FIXTURES.map((f) => f.name),
    );
    for (const entry of manifest.fixtures) {
      expect(statSync(entry.artifacts.symbols).size).toBeGreaterThan(0);
      expect(statSync(entry.artifacts.stripped).size).toBeGreaterThan(0);
    }
  });

  it("writes a manifest that round-trips through its JSON file", () => {
    const onDisk = JSON.parse(
      readFileSync(join(outDir, "manifest.json"), "utf8"),
    ) as Manifest;
    expect(onDisk.schema).toBe(MANIFEST_SCHEMA);
    expect(onDisk.version).toBe(MANIFEST_VERSION);
    expect(onDisk).toEqual(manifest);
  });

  it("matches the symbol-dump oracle for every fixture", () => {
    for (const entry of manifest.fixtures) {
      const expected = new Set(entry.expectedExports.map((e) => e.name));
      expect(dumpDefinedFunctions(entry.artifacts.symbols)).toEqual(expected);
    }
  });

  it("exports identical sets from stripped and unstripped variants", () => {
    for (const entry of manifest.fixtures) {
      const unstripped = dumpDefinedFunctions(entry.artifacts.symbols);
      const stripped = dumpDefinedFunctions(entry.artifacts.stripped);
      expect(stripped).toEqual(unstripped);
    }
  });

  it("gives the baseline fixture six exports, five of them fuzzable", () => {
    const basic = manifest.fixtures.find((f) => f.name === "libfixture_basic");
    expect(basic).toBeDefined();
    expect(basic!.expectedExports).toHaveLength(6);
    expect(basic!.expectedExports.filter((e) => e.fuzzable)).toHaveLength(5);
    const excluded = basic!.expectedExports.find((e) => !e.fuzzable);
    expect(excluded).toMatchObject({ name: "get_version", arity: 0 });
  });

  it("fails a build that emits warnings", () => {
    const warnDir = mkdtempSync(join(tmpdir(), "fixture-warn-"));
    writeFileSync(
      join(warnDir, "warny.c"),
      "#include <stdint.h>\nint64_t lax(int64_t used, int64_t unused) { return used; }\n",
    );
    const spec = {
      name: "libwarny",
      source: "warny.c",
      buildFlags: [],
      expectedExports: [{ name: "lax", arity: 2, fuzzable: true }],
    };
    expect(() =>
      buildFixture(spec, warnDir, warnDir, findCompiler()),
    ).toThrowError(FixtureBuildError);
  });
});
