/* tslint:disable */
/* eslint-disable */

/**
 * Sampled residuals of the involution axioms and Yang-Baxter.
 */
export function axiom_residuals(key: string, samples: number, seed: number): string;

/**
 * Catalog keys grouped by kind.
 */
export function catalog_keys(): string;

/**
 * Both transport orders over a homotopy and their pointwise gap. `key` is
 * a catalog homotopy, or an algebroid key, in which case the surface is
 * the infinitesimal homotopy of a random fiber surface drawn from `seed`.
 */
export function homotopy_discrepancy(key: string, step: number, seed: number): string;

/**
 * Transport along a catalog path. Returns times, base points and fiber
 * values at every step.
 */
export function path_transport(key: string, step: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly axiom_residuals: (a: number, b: number, c: number, d: number) => [number, number];
    readonly catalog_keys: () => [number, number];
    readonly homotopy_discrepancy: (a: number, b: number, c: number, d: number) => [number, number];
    readonly path_transport: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
