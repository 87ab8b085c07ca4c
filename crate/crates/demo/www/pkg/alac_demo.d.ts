/* tslint:disable */
/* eslint-disable */

/**
 * GDSIM and GAME between two scenes, one entry per level `0..=max_level`.
 */
export class Comparison {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    game(): Float64Array;
    gdsim(): Float64Array;
}

export class Raster {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    total(): number;
    /**
     * Row-major cell values.
     */
    values(): Float64Array;
    readonly height_cells: number;
    readonly width_cells: number;
}

/**
 * Class breaks over `values`; `method` is `"jenks"` or `"even"`.
 */
export function breaks(values: Float64Array, k: number, method: string): Float64Array;

export function compare(a: Float64Array, b: Float64Array, width: number, height: number, cell_size: number, sigma: number, max_level: number): Comparison;

export function density(points: Float64Array, width: number, height: number, cell_size: number, sigma: number): Raster;

/**
 * Clustered random head positions from the synthetic scene generator.
 */
export function random_points(seed: number, width: number, height: number, count: number, clustering: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_comparison_free: (a: number, b: number) => void;
    readonly __wbg_raster_free: (a: number, b: number) => void;
    readonly breaks: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly compare: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
    readonly comparison_game: (a: number) => [number, number];
    readonly comparison_gdsim: (a: number) => [number, number];
    readonly density: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly random_points: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly raster_height_cells: (a: number) => number;
    readonly raster_total: (a: number) => number;
    readonly raster_values: (a: number) => [number, number];
    readonly raster_width_cells: (a: number) => number;
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
