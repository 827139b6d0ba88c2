import assert from "node:assert/strict";
import { test } from "node:test";
import { geoRequired, validateUpload } from "../src/validate.js";
const file = new Blob([new Uint8Array([1, 2, 3])], { type: "image/png" });
function form(overrides = {}) {
    return { file, datasetKind: "eelgrass", lat: "", lon: "", zoom: "", ...overrides };
}
test("eelgrass upload needs no geo", () => {
    const result = validateUpload(form());
    assert.equal(result.ok, true);
    assert.equal(result.geo, null);
});
test("aquaculture without lat/lon is blocked client-side", () => {
    const result = validateUpload(form({ datasetKind: "aquaculture" }));
    assert.equal(result.ok, false);
    assert.match(result.errors.join(" "), /required for aquaculture/);
});
test("aquaculture with valid geo passes and parses numbers", () => {
    const result = validateUpload(form({ datasetKind: "aquaculture", lat: "-8.75", lon: "-63.9", zoom: "15" }));
    assert.equal(result.ok, true);
    assert.deepEqual(result.geo, { lat: -8.75, lon: -63.9, zoom: 15 });
});
test("geo bounds are enforced", () => {
    assert.equal(validateUpload(form({ lat: "95", lon: "0" })).ok, false);
    assert.equal(validateUpload(form({ lat: "0", lon: "181" })).ok, false);
    assert.equal(validateUpload(form({ lat: "0", lon: "0", zoom: "99" })).ok, false);
    assert.equal(validateUpload(form({ lat: "abc", lon: "0" })).ok, false);
});
test("lat without lon is rejected", () => {
    const result = validateUpload(form({ lat: "10" }));
    assert.equal(result.ok, false);
    assert.match(result.errors.join(" "), /together/);
});
test("missing file is rejected", () => {
    const result = validateUpload(form({ file: null }));
    assert.equal(result.ok, false);
});
test("unknown dataset kind is rejected", () => {
    const result = validateUpload(form({ datasetKind: "weather" }));
    assert.equal(result.ok, false);
});
test("geoRequired is aquaculture-only", () => {
    assert.equal(geoRequired("aquaculture"), true);
    assert.equal(geoRequired("eelgrass"), false);
    assert.equal(geoRequired("solar"), false);
});
