/** Independent symbol-dump oracle.
 *
 * Reads a shared object's defined dynamic function symbols with
 * binutils (`nm`, falling back to `readelf`) — deliberately not
 * sharing a single line of parsing with anything being verified.
 */

import { spawnSync } from "node:child_process";

function runTool(command: string, args: string[]): string | null {
  const proc = spawnSync(command, args, { encoding: "utf8" });
  if (proc.error || proc.status !== 0) {
    return null;
  }
  return proc.stdout;
}

/** `nm -D --defined-only`: keep global/weak text and ifunc symbols. */
function parseNm(output: string): Set<string> {
  const names = new Set<string>();
  for (const line of output.split("\n")) {
    const match = /^[0-9a-f]+ ([TWi]) (\S+)$/.exec(line.trim());
    if (match) {
      names.add(match[2]!);
    }
  }
  return names;
}

/** `readelf -W --dyn-syms`: defined GLOBAL/WEAK FUNC rows. */
function parseReadelf(output: string): Set<string> {
  const names = new Set<string>();
  const row =
    /^\s*\d+:\s+[0-9a-f]+\s+\S+\s+(\w+)\s+(\w+)\s+\S+\s+(\S+)\s+(\S+)/;
  for (const line of output.split("\n")) {
    const match = row.exec(line);
    if (!match) {
      continue;
    }
    const [, symType, binding, ndx, name] = match;
    if (
      symType === "FUNC" &&
      (binding === "GLOBAL" || binding === "WEAK") &&
      ndx !== "UND"
    ) {
      names.add(name!.split("@")[0]!);
    }
  }
  return names;
}

export class OracleUnavailableError extends Error {
  readonly code = "ORACLE_UNAVAILABLE";
}

export function dumpDefinedFunctions(library: string): Set<string> {
  const nm = runTool("nm", ["-D", "--defined-only", library]);
  if (nm !== null) {
    return parseNm(nm);
  }
  const readelf = runTool("readelf", ["-W", "--dyn-syms", library]);
  if (readelf !== null) {
    return parseReadelf(readelf);
  }
  throw new OracleUnavailableError(
    "neither nm nor readelf is available to dump symbols",
  );
}

export function oracleAvailable(): boolean {
  return (
    runTool("nm", ["--version"]) !== null ||
    runTool("readelf", ["--version"]) !== null
  );
}
