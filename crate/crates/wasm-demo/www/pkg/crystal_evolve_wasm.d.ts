/* tslint:disable */
/* eslint-disable */

/**
 * Parses a CIF and returns its neighbour graph as JSON, with the Gaussian
 * expansion of every edge distance.
 */
export function cif_graph(cif: string, cutoff: number, max_neighbors: number): string;

/**
 * Evolves the 60-structure toy pool against the synthetic reference
 * properties and returns per-generation records plus the best structure.
 */
export function evolve_toy(seed: bigint, generations: number, elite_k: number): string;

/**
 * Fitness with the default weights. NaN for non-finite input.
 */
export function fitness(fe: number, v: number, de: number): number;

/**
 * Row-major `n × n` grid of fitness over V (columns) and ΔE (rows) at fixed FE.
 */
export function fitness_grid(fe: number, v_min: number, v_max: number, de_min: number, de_max: number, n: number): Float64Array;

/**
 * A structure from the bundled toy pool, as CIF text.
 */
export function sample_cif(index: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly cif_graph: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly evolve_toy: (a: bigint, b: number, c: number) => [number, number, number, number];
    readonly fitness: (a: number, b: number, c: number) => number;
    readonly fitness_grid: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly sample_cif: (a: number) => [number, number];
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
