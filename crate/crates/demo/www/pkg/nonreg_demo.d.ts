/* tslint:disable */
/* eslint-disable */

/**
 * Simulates n trajectories at theta0, returns the MLE, the Bayes estimate
 * and the log-likelihood curve over the parameter set.
 */
export function estimate(model: string, theta0: number, n: number, seed: bigint): string;

/**
 * Draws from the limit law of `regime` for a catalog model at theta0 and
 * bins the draws into a histogram.
 */
export function limit_histogram(model: string, regime: string, theta0: number, samples: number, bins: number, bayes: boolean, seed: bigint): string;

/**
 * Optimal window of the sine model at measure `mu_star`, with the Fisher
 * integrand profile it thresholds.
 */
export function sine_window(theta: number, mu_star: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly estimate: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly limit_histogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly sine_window: (a: number, b: number) => [number, number, number, number];
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
