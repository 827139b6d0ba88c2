// Client-side validation of the upload form; mirrors the server's
// preconditions so obviously-bad submissions never leave the browser.

export const DATASET_KINDS = ["aquaculture", "eelgrass", "solar"] as const;
export type DatasetKind = (typeof DATASET_KINDS)[number];

export interface UploadForm {
  file: Blob | null;
  datasetKind: string;
  lat: string;
  lon: string;
  zoom: string;
}

export interface ValidationResult {
  ok: boolean;
  errors: string[];
  geo: { lat: number; lon: number; zoom?: number } | null;
}

export function geoRequired(datasetKind: string): boolean {
  return datasetKind === "aquaculture";
}

export function validateUpload(form: UploadForm): ValidationResult {
  const errors: string[] = [];
  if (!form.file) errors.push("Choose an image file to classify.");
  if (!DATASET_KINDS.includes(form.datasetKind as DatasetKind)) {
    errors.push(`Unknown dataset kind '${form.datasetKind}'.`);
  }

  const latGiven = form.lat.trim() !== "";
  const lonGiven = form.lon.trim() !== "";
  const zoomGiven = form.zoom.trim() !== "";

  if (geoRequired(form.datasetKind) && (!latGiven || !lonGiven)) {
    errors.push("Latitude and longitude are required for aquaculture uploads.");
  }
  if (latGiven !== lonGiven) {
    errors.push("Provide latitude and longitude together.");
  }

  let geo: ValidationResult["geo"] = null;
  if (latGiven && lonGiven) {
    const lat = Number(form.lat);
    const lon = Number(form.lon);
    if (!Number.isFinite(lat) || lat < -90 || lat > 90) {
      errors.push("Latitude must be a number in [-90, 90].");
    }
    if (!Number.isFinite(lon) || lon < -180 || lon > 180) {
      errors.push("Longitude must be a number in [-180, 180].");
    }
    let zoom: number | undefined;
    if (zoomGiven) {
      zoom = Number(form.zoom);
      if (!Number.isInteger(zoom) || zoom < 0 || zoom > 22) {
        errors.push("Zoom must be an integer in [0, 22].");
        zoom = undefined;
      }
    }
    if (errors.length === 0) geo = { lat, lon, ...(zoom !== undefined ? { zoom } : {}) };
  }

  return { ok: errors.length === 0, errors, geo };
}
