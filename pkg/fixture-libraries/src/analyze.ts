/** Bridge to the fuzzsmith CLI.
 *
 * The analyzer is consumed strictly through its command-line JSON
 * interface — never imported — so this package exercises the same
 * contract any other downstream tool would.
 */

import { execFileSync, spawnSync } from "node:child_process";

const PYTHON = process.env["FUZZSMITH_PYTHON"] ?? "python3";

export interface AnalyzeExportRow {
  name: string;
  address: string;
  binding: string;
  fuzzable: boolean;
  exclusion_reason: string | null;
  signature: string | null;
  return_class: string | null;
  param_classes: string[] | null;
  confidence: string | null;
}

export interface AnalyzePayload {
  library: string;
  path: string;
  export_count: number;
  fuzzable_count: number;
  exports: AnalyzeExportRow[];
}

export function analyzerAvailable(): boolean {
  const probe = spawnSync(PYTHON, ["-m", "fuzzsmith.cli", "--version"], {
    encoding: "utf8",
  });
  return !probe.error && probe.status === 0;
}

export function analyzeLibrary(library: string): AnalyzePayload {
  const stdout = execFileSync(
    PYTHON,
    ["-m", "fuzzsmith.cli", "analyze", library, "--json"],
    { encoding: "utf8" },
  );
  return JSON.parse(stdout) as AnalyzePayload;
}
