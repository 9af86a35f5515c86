export class SchemaMismatch extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaMismatch";
  }
}

export class MissingFile extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MissingFile";
  }
}
