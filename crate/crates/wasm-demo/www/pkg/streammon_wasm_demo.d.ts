/* tslint:disable */
/* eslint-disable */

/**
 * Base fee per block under the adaptive rule for a repeating usage pattern
 * (percent of a 30M gas limit), starting from `initial_gwei`.
 */
export function base_fee_curve(initial_gwei: number, min_gwei: number, denominator: number, target_pct: number, usage_pattern: string, blocks: number): string;

/**
 * Simulates every preset chain for `hours` and returns whole-run
 * statistics plus downsampled overview charts of both metrics.
 */
export function compare_presets(seed: number, hours: number, bucket_s: number): string;

/**
 * Median, quartiles and IQR of numbers separated by whitespace, commas or semicolons.
 */
export function summarize_values(text: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly base_fee_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly compare_presets: (a: number, b: number, c: number) => [number, number, number, number];
    readonly summarize_values: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
