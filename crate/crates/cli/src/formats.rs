//! File format grammar printed by `--help`.

pub const FORMATS: &str = "\
FILE FORMATS

  Label raster (.pgm)
    P5 binary graymap: ASCII header `P5\\n<width> <height>\\n<maxval>\\n`, then
    width*height samples in row-major order. maxval is 255 (8-bit samples) or
    65535 (16-bit big-endian samples). Each sample is a class code. Header
    comments (`#` to end of line) are accepted on input. Written as 16-bit.

  Change map (.pgm)
    Same container, written with maxval 255: 0 = unchanged, 255 = changed.
    On input any nonzero sample counts as changed.

  Legend (.txt)
    UTF-8, one entry per line: `code,name,is_background`, where code is a
    16-bit integer and is_background is 0 or 1. Lines starting with `#` are
    comments. The name may contain commas.

  Run-length encoding (`runs`)
    Row-major scan of a width x height grid. Run lengths alternate between
    0-pixels and 1-pixels and always start with a 0-run, which may be 0.
    The runs sum to width*height.

  Mask set (.json)
    {\"width\": W, \"height\": H,
     \"masks\": [{\"id\": I, \"score\": S, \"runs\": [...]}, ...]}
    Ids are unique; score defaults to 1.0.

  Instance dump (.json)
    {\"width\": W, \"height\": H,
     \"instances\": [{\"id\": I, \"class_code\": C, \"area\": A,
                    \"bbox\": [x, y, w, h], \"centroid\": [cx, cy],
                    \"runs\": [...]}, ...]}
    Geometry is recomputed from the runs on input.

  Instance map (.pgm)
    16-bit label raster holding the instance id per pixel, 0 = no instance.

  Prompt export (.json)
    [{\"instance_id\": I, \"class_code\": C, \"box\": [x, y, w, h],
      \"runs\": [...]}, ...]
    One entry per background instance; box is the tight box of the mask.

  Prompted results (.json)
    {\"width\": W, \"height\": H,
     \"results\": [{\"instance_id\": I, \"runs\": [...]}, ...]}
    runs encode the pixels the segmenter recognized for that prompt.

  Verdicts (.csv)
    Header `instance_id,changed,best_overlap,n_masks_used`, one row per
    instance; changed is 0 or 1, best_overlap has 6 decimals.

  Metrics (.csv)
    Header `dataset,tp,fp,fn,tn,oa,f1,kc` followed by one row; ratios have
    6 decimals.

  Config (--config)
    `key = value` lines, `#` comments. Keys: theta, connectivity, min_area,
    ignore_codes, min_intersection, patience, shape_check, area_band_lo,
    area_band_hi, aspect_band_lo, aspect_band_hi, min_blob_area, workers.
    Command-line flags take precedence over the file.

  Overlay (.ppm)
    P6 binary pixmap `P6\\n<width> <height>\\n255\\n` with RGB samples.
    Changed pixels are red (255, 0, 0).

EXIT STATUS
  0 success, 1 usage error, 2 data or format error.
";
