/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_comparison_free: (a: number, b: number) => void;
export const __wbg_raster_free: (a: number, b: number) => void;
export const breaks: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const compare: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
export const comparison_game: (a: number) => [number, number];
export const comparison_gdsim: (a: number) => [number, number];
export const density: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const random_points: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const raster_height_cells: (a: number) => number;
export const raster_total: (a: number) => number;
export const raster_values: (a: number) => [number, number];
export const raster_width_cells: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
