//! Grid traversal along a segment.

/// Visits every cell the segment from `(x0, y0)` to `(x1, y1)` passes
/// through, in order, as signed `(row, col)` pairs. When the segment crosses
/// exactly through a cell corner both side cells are visited, so the walk is
/// a superset of any point sampling of the segment. Stops early when `visit`
/// returns `false`.
pub fn traverse<F>(x0: f64, y0: f64, x1: f64, y1: f64, cell_size: f64, mut visit: F)
where
    F: FnMut(isize, isize) -> bool,
{
    let mut col = (x0 / cell_size).floor() as isize;
    let mut row = (y0 / cell_size).floor() as isize;
    let end_col = (x1 / cell_size).floor() as isize;
    let end_row = (y1 / cell_size).floor() as isize;
    if !visit(row, col) {
        return;
    }
    let dx = x1 - x0;
    let dy = y1 - y0;
    let step_c: isize = if dx > 0.0 { 1 } else { -1 };
    let step_r: isize = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { cell_size / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { cell_size / dy.abs() } else { f64::INFINITY };
    let next_boundary = |pos: f64, idx: isize, step: isize| -> f64 {
        if step > 0 {
            (idx + 1) as f64 * cell_size - pos
        } else {
            pos - idx as f64 * cell_size
        }
    };
    let mut t_max_x = if dx != 0.0 {
        next_boundary(x0, col, step_c) / dx.abs()
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        next_boundary(y0, row, step_r) / dy.abs()
    } else {
        f64::INFINITY
    };
    // bounded by the Manhattan cell distance plus slack
    let max_iters = (end_col - col).unsigned_abs() + (end_row - row).unsigned_abs() + 2;
    for _ in 0..max_iters {
        if row == end_row && col == end_col {
            return;
        }
        if t_max_x.min(t_max_y) > 1.0 {
            return;
        }
        if t_max_x < t_max_y {
            col += step_c;
            t_max_x += t_delta_x;
        } else if t_max_y < t_max_x {
            row += step_r;
            t_max_y += t_delta_y;
        } else {
            // exact corner: both side cells, then the diagonal one
            if !visit(row, col + step_c) || !visit(row + step_r, col) {
                return;
            }
            col += step_c;
            row += step_r;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
        if !visit(row, col) {
            return;
        }
    }
}
