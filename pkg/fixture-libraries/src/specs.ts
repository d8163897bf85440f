/** Ground truth for every fixture: the exports its source defines. */

export interface ExportSpec {
  name: string;
  arity: number;
  fuzzable: boolean;
}

export interface FixtureSpec {
  /** Library base name; artifacts are `<name>.so` / `<name>.stripped.so`. */
  name: string;
  /** C source file, relative to the fixture directory. */
  source: string;
  /** Extra compile flags on top of the common shared-object set. */
  buildFlags: string[];
  expectedExports: ExportSpec[];
}

export const FIXTURES: FixtureSpec[] = [
  {
    name: "libfixture_basic",
    source: "basic.c",
    buildFlags: [],
    expectedExports: [
      { name: "add", arity: 2, fuzzable: true },
      { name: "concat", arity: 2, fuzzable: true },
      { name: "parse_buf", arity: 2, fuzzable: true },
      { name: "get_version", arity: 0, fuzzable: false },
      { name: "reg_callback", arity: 1, fuzzable: true },
      { name: "process_blob", arity: 3, fuzzable: true },
    ],
  },
  {
    name: "libfixture_text",
    source: "text.c",
    buildFlags: [],
    expectedExports: [
      { name: "text_checksum", arity: 1, fuzzable: true },
      { name: "text_length", arity: 1, fuzzable: true },
    ],
  },
  {
    name: "libfixture_records",
    source: "records.c",
    buildFlags: [],
    expectedExports: [
      { name: "record_magic", arity: 1, fuzzable: true },
      { name: "record_size_ok", arity: 1, fuzzable: true },
      { name: "record_sum", arity: 1, fuzzable: true },
    ],
  },
];
