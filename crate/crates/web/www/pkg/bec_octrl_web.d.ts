/* tslint:disable */
/* eslint-disable */

/**
 * Two-mode squeezing problem optimized one quasi-Newton step at a time.
 */
export class Squeezer {
    free(): void;
    [Symbol.dispose](): void;
    control(): Float64Array;
    cost(): number;
    /**
     * Final population of each number state `|n, N - n>`.
     */
    distribution(): Float64Array;
    /**
     * `n` atoms, interaction `1/n`, tunneling `3 exp(-t/10)` on `[0, tmax]`.
     */
    constructor(n: number, tmax: number, gamma: number);
    /**
     * Number variance relative to the binomial state at every knot.
     */
    squeezing(): Float64Array;
    /**
     * One BFGS iteration. Returns the new cost.
     */
    step(): number;
    times(): Float64Array;
}

/**
 * Split a condensate by ramping up the barrier of a double well.
 *
 * Returns `frames + 1` rows of 101 values, flattened: the grid first, then
 * the density at equally spaced times from 0 to `tmax`.
 */
export function split_density(v0: number, kappa: number, tmax: number, frames: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_squeezer_free: (a: number, b: number) => void;
    readonly split_density: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly squeezer_control: (a: number) => [number, number];
    readonly squeezer_cost: (a: number) => [number, number, number];
    readonly squeezer_distribution: (a: number) => [number, number, number, number];
    readonly squeezer_new: (a: number, b: number, c: number) => [number, number, number];
    readonly squeezer_squeezing: (a: number) => [number, number, number, number];
    readonly squeezer_step: (a: number) => [number, number, number];
    readonly squeezer_times: (a: number) => [number, number];
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
