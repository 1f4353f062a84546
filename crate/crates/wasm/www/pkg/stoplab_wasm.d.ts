/* tslint:disable */
/* eslint-disable */

/**
 * One Brownian path with its embedded walk, the CRR price path driven by the
 * walk and the Black-Scholes path driven by the Brownian path.
 */
export function coupled_paths(s0: number, rate: number, sigma: number, horizon: number, n: number, seed: number): string;

/**
 * American put on the CRR tree: root value and the per-step critical price.
 */
export function put_boundary(s0: number, rate: number, sigma: number, strike: number, horizon: number, n: number): string;

/**
 * Histograms of the optimal put exercise time on the `n` and `2n` trees,
 * both read along the same Brownian drivers.
 */
export function stopping_time_histogram(s0: number, rate: number, sigma: number, strike: number, horizon: number, n: number, paths: number, bins: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly coupled_paths: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly put_boundary: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly stopping_time_histogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
